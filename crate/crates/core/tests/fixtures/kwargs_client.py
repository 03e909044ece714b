class AwsClient(object):
    def __init__(self, *args, **kwargs):
        self._boto3client = None
        super(AwsClient, self).__init__(*args, **kwargs)

    def create_ec2_client(self, context=None):
        access_key = CONF.aws.aws_access_key
        secret_key = CONF.aws.aws_secret_key
        region_name = CONF.aws.aws_region
        kwargs = {}
        kwargs['aws_access_key_id'] = access_key
        kwargs['aws_secret_access_key'] = secret_key
        kwargs['region_name'] = region_name

        return boto3.client('ec2', **kwargs)

    def get_aws_client(self, context):
        if not self._boto3client:
            try:
                ec2_client = self.create_ec2_client(context)
                self._boto3client = AwsClientPlugin(ec2_client)
            except Exception as e:
                LOG.error(_LE('Create aws client failed: %s'), e)
                raise exception_ex.OsAwsConnectFailed

        return self._boto3client

    def describe_snapshots(self, **kwargs):
        response = self._ec2_client.describe_snapshots(**kwargs)
        snapshots = response.get('Snapshots', [])
        return snapshots
